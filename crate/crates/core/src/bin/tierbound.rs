fn main() {
    std::process::exit(tierbound::cli::run(std::env::args_os()));
}
