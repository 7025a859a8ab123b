//! Test support for graphforge: a random graph generator and brute-force
//! reference checks that share no code with the passes they verify.

mod gen;
mod oracle;

pub use gen::{random_buffer, random_function, random_inputs, GraphConfig};
pub use oracle::{
    check_partition, check_plan, is_topological_order, max_abs_diff, reference_liveness,
    shuffled_instruction_order,
};
