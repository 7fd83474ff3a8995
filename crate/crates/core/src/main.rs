fn main() {
    std::process::exit(hazrate::cli::main());
}
