use jointsmooth::bench::PeakAllocator;

#[global_allocator]
static ALLOC: PeakAllocator = PeakAllocator::new();

fn main() {
    std::process::exit(jointsmooth_cli::run(std::env::args_os(), Some(&ALLOC)));
}
