fn main() {
    std::process::exit(dilatlab_cli::main_with(std::env::args_os()));
}
