fn main() {
    std::process::exit(kbpop_cli::run(std::env::args_os()));
}
