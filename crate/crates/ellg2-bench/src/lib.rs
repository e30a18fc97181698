// Bench-only package; see benches/kernels.rs.
