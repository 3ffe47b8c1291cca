fn main() {
    std::process::exit(polyeval_cli::run(std::env::args_os()));
}
