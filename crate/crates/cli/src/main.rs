fn main() {
    std::process::exit(qfc_cli::run(std::env::args_os()));
}
