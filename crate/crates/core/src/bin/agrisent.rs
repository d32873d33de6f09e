fn main() {
    std::process::exit(agrisent::cli::main(std::env::args_os()));
}
