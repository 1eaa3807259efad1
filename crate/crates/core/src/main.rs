fn main() {
    std::process::exit(operand_qa::cli::main_with_args(std::env::args_os()));
}
