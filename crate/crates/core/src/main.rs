fn main() {
    std::process::exit(har_core::cli::run(std::env::args_os()));
}
