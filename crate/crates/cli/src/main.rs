fn main() {
    std::process::exit(stigma_cli::run(std::env::args_os()));
}
