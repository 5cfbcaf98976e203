fn main() {
    std::process::exit(conslab::cli::run(std::env::args_os()));
}
