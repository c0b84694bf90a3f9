fn main() {
    std::process::exit(moment_measures::cli::run(std::env::args_os()));
}
