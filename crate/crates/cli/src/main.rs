fn main() {
    std::process::exit(twinwidth_cli::run(std::env::args_os()));
}
