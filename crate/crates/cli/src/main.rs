fn main() {
    std::process::exit(mosaic_cli::main_with_args(std::env::args_os()));
}
