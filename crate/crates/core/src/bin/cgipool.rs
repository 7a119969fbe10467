fn main() {
    std::process::exit(cgipool::cli::run(std::env::args_os()));
}
