fn main() {
    std::process::exit(metaqa_cli::main_with(std::env::args_os()));
}
