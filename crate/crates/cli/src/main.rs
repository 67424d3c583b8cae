fn main() {
    std::process::exit(qptori_cli::run(std::env::args_os()));
}
