fn main() {
    std::process::exit(fairgnn::cli::main());
}
