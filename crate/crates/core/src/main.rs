fn main() {
    std::process::exit(refine_search::cli::main_from_env());
}
