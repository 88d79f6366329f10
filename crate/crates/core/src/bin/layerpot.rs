fn main() {
    std::process::exit(layerpot::cli::run(std::env::args_os()));
}
