fn main() {
    std::process::exit(evoplace::cli::run(std::env::args_os()));
}
