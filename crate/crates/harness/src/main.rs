fn main() {
    std::process::exit(kslab_harness::cli::main_with_args(std::env::args_os()));
}
