fn main() {
    std::process::exit(sellab::cli::run(std::env::args_os()));
}
