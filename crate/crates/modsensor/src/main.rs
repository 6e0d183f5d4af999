fn main() {
    std::process::exit(modsensor::run(std::env::args_os()));
}
