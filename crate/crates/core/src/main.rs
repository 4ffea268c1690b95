fn main() {
    std::process::exit(i2v_detect::cli::main_with(std::env::args_os()));
}
