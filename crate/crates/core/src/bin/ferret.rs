fn main() {
    std::process::exit(ferret_core::cli::run(std::env::args_os()));
}
