use std::ffi::CStr;
use std::ptr;

use moment_measures_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mm_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn solve_three_atoms_through_the_abi() {
    let atoms = [-1.0, 0.0, 1.0];
    let weights = [0.25, 0.5, 0.25];
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(
            mm_measure_new(1, 3, atoms.as_ptr(), weights.as_ptr(), &mut m),
            MmStatus::Ok
        );
        let mut failed = -1;
        assert_eq!(mm_measure_validate(m, 1e-9, &mut failed), MmStatus::Ok);
        assert_eq!(failed, 0);

        let mut p = ptr::null_mut();
        let mut converged = 0;
        assert_eq!(mm_solve(m, 1e-10, 1000, &mut p, &mut converged), MmStatus::Ok);
        assert_eq!(converged, 1);

        let (mut dim, mut count) = (0, 0);
        assert_eq!(mm_potential_shape(p, &mut dim, &mut count), MmStatus::Ok);
        assert_eq!((dim, count), (1, 3));

        let mut values = [0.0; 3];
        assert_eq!(mm_potential_values(p, values.as_mut_ptr(), 3), MmStatus::Ok);
        let l4 = 4f64.ln();
        for (v, e) in values.iter().zip([1.0 - l4, -l4, 1.0 - l4]) {
            assert!((v - e).abs() < 1e-8, "{values:?}");
        }

        let mut masses = [0.0; 3];
        assert_eq!(mm_moment_measure(p, 0, 0, masses.as_mut_ptr(), 3), MmStatus::Ok);
        for (m, w) in masses.iter().zip(weights) {
            assert!((m - w).abs() < 1e-9);
        }

        let (mut value, mut index) = (0.0, 99);
        assert_eq!(
            mm_potential_eval(p, [2.0].as_ptr(), &mut value, &mut index),
            MmStatus::Ok
        );
        assert_eq!(index, 2);
        assert!((value - (2.0 - values[2])).abs() < 1e-15);

        mm_potential_free(p);
        mm_measure_free(m);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        let atoms = [1.0, 0.0, -1.0, 0.0];
        assert_eq!(
            mm_measure_new(2, 2, atoms.as_ptr(), [1.0, 1.0].as_ptr(), &mut m),
            MmStatus::Ok
        );
        let mut failed = 0;
        assert_eq!(mm_measure_validate(m, 1e-9, &mut failed), MmStatus::Ok);
        assert_eq!(failed, 2);
        let mut p = ptr::null_mut();
        let mut converged = 0;
        assert_eq!(mm_solve(m, 1e-8, 100, &mut p, &mut converged), MmStatus::Precondition);
        assert!(last_error().contains("condition (ii)"), "{}", last_error());
        assert!(p.is_null());
        mm_measure_free(m);

        assert_eq!(
            mm_measure_new(1, 2, ptr::null(), [1.0, 1.0].as_ptr(), &mut m),
            MmStatus::NullPointer
        );
        assert_eq!(
            mm_measure_validate(ptr::null(), 1e-9, &mut failed),
            MmStatus::NullPointer
        );
        assert_eq!(
            mm_measure_new(1, 2, [f64::NAN, 1.0].as_ptr(), [1.0, 1.0].as_ptr(), &mut m),
            MmStatus::InvalidInput
        );
        assert!(last_error().contains("non-finite"));

        let mut q = ptr::null_mut();
        assert_eq!(
            mm_potential_new(1, 2, [1.0, 2.0].as_ptr(), [0.0, 0.0].as_ptr(), &mut q),
            MmStatus::Ok
        );
        let mut out = [0.0; 2];
        assert_eq!(mm_moment_measure(q, 0, 0, out.as_mut_ptr(), 2), MmStatus::NotIntegrable);
        assert_eq!(mm_potential_values(q, out.as_mut_ptr(), 5), MmStatus::InvalidInput);
        mm_potential_free(q);
        mm_potential_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/moment_measures.h")).unwrap();
    for name in [
        "typedef struct MmMeasure MmMeasure",
        "typedef struct MmPotential MmPotential",
        "MM_STATUS_NOT_CONVERGED",
        "mm_measure_new",
        "mm_measure_free",
        "mm_measure_validate",
        "mm_solve",
        "mm_potential_eval",
        "mm_potential_values",
        "mm_potential_free",
        "mm_moment_measure",
        "mm_last_error_message",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
