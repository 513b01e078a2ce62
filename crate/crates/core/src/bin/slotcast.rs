fn main() {
    std::process::exit(slotcast::cli::main_with_args(std::env::args_os()));
}
