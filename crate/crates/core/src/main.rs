fn main() {
    std::process::exit(advtex_core::cli::run(std::env::args_os()));
}
