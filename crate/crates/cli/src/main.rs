fn main() {
    std::process::exit(xctrl_cli::run(std::env::args_os()));
}
