fn main() {
    std::process::exit(m2v::cli::main());
}
