fn main() {
    std::process::exit(dnsc::cli::run(std::env::args_os()));
}
