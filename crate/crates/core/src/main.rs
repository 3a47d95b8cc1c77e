fn main() {
    std::process::exit(portfolio_lab::cli::run_cli(std::env::args_os()));
}
