fn main() {
    std::process::exit(spex_core::cli::run(std::env::args_os()));
}
