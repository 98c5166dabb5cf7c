fn main() {
    std::process::exit(fexp_cli::run(std::env::args_os()));
}
