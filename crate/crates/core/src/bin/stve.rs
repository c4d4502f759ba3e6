fn main() {
    std::process::exit(stve::cli::main_from_env());
}
