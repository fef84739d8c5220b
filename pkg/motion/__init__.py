"""Motion data package: value types, file schemas, I/O and kinematics."""
