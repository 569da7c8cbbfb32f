fn main() {
    std::process::exit(glossa::cli::run(std::env::args_os()));
}
