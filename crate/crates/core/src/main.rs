fn main() {
    std::process::exit(volmap::cli::run(std::env::args_os()));
}
