fn main() {
    std::process::exit(amem_lab::cli::main_with(std::env::args_os()));
}
