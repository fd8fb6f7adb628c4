fn main() {
    std::process::exit(quantcredit::cli::run(std::env::args_os()));
}
