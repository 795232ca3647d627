use pvlt::statsuite::nist::*;
use pvlt::statsuite::{bytes_to_bits, nist_battery, NistParams, TemplateChoice};

const TOL: f64 = 1e-4;

const PI_100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
const S_128: &str = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";

fn b(s: &str) -> Vec<u8> {
    s.bytes().map(|c| c - b'0').collect()
}

fn close(got: f64, want: f64, what: &str) {
    assert!((got - want).abs() < TOL, "{what}: got {got}, want {want}");
}

fn e_bits() -> Vec<u8> {
    let bytes = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/e_1e6.bin")).unwrap();
    let mut bits = bytes_to_bits(&bytes);
    bits.truncate(1_000_000);
    bits
}

#[test]
fn short_examples() {
    close(frequency(&b("1011010101")), 0.527089, "frequency");
    close(frequency(&b(PI_100)), 0.109599, "frequency pi");
    close(block_frequency(&b("0110011010"), 3), 0.801252, "block frequency");
    close(block_frequency(&b(PI_100), 10), 0.706438, "block frequency pi");
    close(cumulative_sums(&b("1011010111"), false), 0.4116588, "cusum");
    close(cumulative_sums(&b(PI_100), false), 0.219194, "cusum pi fwd");
    close(cumulative_sums(&b(PI_100), true), 0.114866, "cusum pi rev");
    close(runs(&b("1001101011")), 0.147232, "runs");
    close(runs(&b(PI_100)), 0.500798, "runs pi");
    close(longest_run(&b(S_128)), 0.180609, "longest run");
    let p = non_overlapping_templates(&b("10100100101110010110"), &[vec![0, 0, 1]], 2);
    close(p[0], 0.344154, "non-overlapping");
    close(approximate_entropy(&b("0100110101"), 3), 0.261961, "apen");
    close(approximate_entropy(&b(PI_100), 2), 0.235301, "apen pi");
    let (p1, p2) = serial(&b("0011011101"), 3);
    close(p1, 0.808792, "serial 1");
    close(p2, 0.670320, "serial 2");
    close(random_excursions(&b("0110110101"))[4], 0.502529, "excursions");
    close(random_excursions_variant(&b("0110110101"))[9], 0.683091, "variant");
}

#[test]
fn expansion_of_e() {
    let bits = e_bits();
    close(frequency(&bits), 0.953749, "frequency");
    close(cumulative_sums(&bits, false), 0.669887, "cusum fwd");
    close(cumulative_sums(&bits, true), 0.724266, "cusum rev");
    close(runs(&bits), 0.561917, "runs");
    close(longest_run(&bits), 0.718945, "longest run");
    close(binary_rank(&bits), 0.306156, "rank");
    close(spectral(&bits), 0.847187, "dft");
    let p = non_overlapping_templates(&bits, &[vec![0, 0, 0, 0, 0, 0, 0, 0, 1]], 8);
    close(p[0], 0.078790, "non-overlapping");
    close(overlapping_template(&bits, 9, 1032, 5), 0.110434, "overlapping");
    let (l, q) = universal_parameters(bits.len());
    close(universal(&bits, l, q).unwrap(), 0.282568, "universal");
    close(approximate_entropy(&bits, 10), 0.700073, "apen");
    close(random_excursions(&bits)[4], 0.786868, "excursions +1");
    close(random_excursions_variant(&bits)[8], 0.826009, "variant -1");
    close(linear_complexity(&bits, 1000), 0.845406, "linear complexity");
    let (a, c) = serial(&bits, 2);
    close(a, 0.843764, "serial m=2 p1");
    close(c, 0.561915, "serial m=2 p2");
    let (a, c) = serial(&bits, 16);
    close(a, 0.766182, "serial m=16 p1");
    close(c, 0.462921, "serial m=16 p2");
}

#[test]
fn battery_on_e() {
    let results = nist_battery(&e_bits(), &NistParams::default()).unwrap();
    assert_eq!(results.len(), 16);
    for r in &results {
        if r.name == "Random Excursions" {
            // State -1 is a genuine rejection for this sequence.
            close(r.p_values[3], 0.007779, "excursions -1");
            assert_eq!(r.pass, Some(false));
        } else {
            assert_eq!(r.pass, Some(true), "{} {:?}", r.name, r.p_values);
        }
    }
}

#[test]
fn battery_all_templates_has_148_values() {
    let params = NistParams {
        templates: TemplateChoice::AllAperiodic,
        ..NistParams::default()
    };
    let results = nist_battery(&e_bits(), &params).unwrap();
    let nt = results.iter().find(|r| r.name == "Non-overlapping Template").unwrap();
    assert_eq!(nt.p_values.len(), 148);
    close(nt.p_values[0], 0.078790, "first template");
}
