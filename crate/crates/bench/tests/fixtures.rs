use embedlab_bench::line_problem;

#[test]
fn line_fixture_has_two_fermi_conditions() {
    let pb = line_problem(4).unwrap();
    assert_eq!(pb.codim(), 2);
    assert_eq!(pb.basis.len(), 4);
}
