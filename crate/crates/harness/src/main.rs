fn main() {
    std::process::exit(vperc::run(std::env::args_os()));
}
