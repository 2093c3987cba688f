//! Holds the `acceptance` test target, which runs every end-to-end criterion
//! and prints one PASS/FAIL line per criterion.
