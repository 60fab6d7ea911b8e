mod properties;
mod solvers;
