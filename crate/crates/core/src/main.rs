fn main() {
    std::process::exit(lripct::cli::run(std::env::args_os()));
}
