fn main() {
    std::process::exit(stancegraph::cli::main_with_exit_code());
}
