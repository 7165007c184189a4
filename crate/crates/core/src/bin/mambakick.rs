fn main() {
    std::process::exit(mambakick::cli::main());
}
