fn main() {
    std::process::exit(levy_qla_cli::run(std::env::args_os()));
}
