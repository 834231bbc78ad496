fn main() {
    std::process::exit(nhchain::cli::cli_main(std::env::args_os()));
}
