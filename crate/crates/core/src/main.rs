// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(pdflow::cli::main());
}
