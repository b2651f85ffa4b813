fn main() {
    std::process::exit(romberg::cli::run(std::env::args_os()));
}
