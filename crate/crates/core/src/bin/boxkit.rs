fn main() {
    std::process::exit(boxkit::cli::run(std::env::args_os()));
}
