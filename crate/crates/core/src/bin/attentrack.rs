fn main() {
    std::process::exit(attentrack::cli::run(std::env::args_os()));
}
