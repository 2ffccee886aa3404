fn main() {
    std::process::exit(polynorta::cli::run(std::env::args_os()));
}
