fn main() {
    std::process::exit(gradfield::cli::main());
}
