fn main() {
    std::process::exit(l2frac::cli::run(std::env::args_os()));
}
