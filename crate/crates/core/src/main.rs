fn main() {
    std::process::exit(dwtreg::cli::run(std::env::args_os()));
}
