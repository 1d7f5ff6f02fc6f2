fn main() {
    std::process::exit(evkit::cli::run(std::env::args_os()));
}
