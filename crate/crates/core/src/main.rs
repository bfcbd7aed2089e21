fn main() {
    std::process::exit(thompson_chm::cli::main_with_args(std::env::args_os()));
}
