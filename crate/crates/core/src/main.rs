fn main() {
    std::process::exit(jamshield::cli::main_with(std::env::args_os()));
}
