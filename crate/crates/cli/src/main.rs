fn main() {
    std::process::exit(qmatrix_cli::execute(std::env::args_os()));
}
