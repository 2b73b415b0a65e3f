fn main() {
    std::process::exit(cheapctl::cli::run(std::env::args_os()));
}
