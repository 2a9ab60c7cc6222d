fn main() {
    std::process::exit(gprune::cli::cli_main(std::env::args_os()));
}
