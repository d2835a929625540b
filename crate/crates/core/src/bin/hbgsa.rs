fn main() {
    std::process::exit(hbgsa::cli::run(std::env::args_os()));
}
