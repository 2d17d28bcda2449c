fn main() {
    std::process::exit(resmin_cli::run(std::env::args_os()));
}
