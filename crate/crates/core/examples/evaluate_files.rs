//! Metrics straight from MOTChallenge text: CLEAR, IDF1 and MOTA on the
//! identities that spend a long stretch heavily occluded.

use crowdtrack::evalio::{crowd_mota, evaluate, parse_mot_str, CrowdMota, MetricsReport};

const GT: &str = "\
1,1,100,100,40,100,1,1,1.0
2,1,104,100,40,100,1,1,0.1
3,1,108,100,40,100,1,1,0.1
4,1,112,100,40,100,1,1,0.9
1,2,400,300,40,100,1,1,1.0
2,2,404,300,40,100,1,1,1.0
3,2,408,300,40,100,1,1,1.0
4,2,412,300,40,100,1,1,1.0
";

// track 7 takes over identity 1 after a gap; one stray box in frame 3
const HYP: &str = "\
1,5,101,100,40,100,0.9,-1,-1,-1
4,7,111,101,40,100,0.8,-1,-1,-1
1,6,400,301,40,100,0.9,-1,-1,-1
2,6,404,300,40,100,0.9,-1,-1,-1
3,6,409,300,40,100,0.9,-1,-1,-1
4,6,412,299,40,100,0.9,-1,-1,-1
3,9,900,600,40,100,0.3,-1,-1,-1
";

fn main() -> crowdtrack::Result<()> {
    let gt = parse_mot_str(GT, "gt")?;
    let hyp = parse_mot_str(HYP, "hyp")?;
    let r = evaluate(&gt, &hyp);
    println!("{}\n{}", MetricsReport::TSV_HEADER, r.tsv_row("toy"));
    println!("ID precision/recall counts: {:?}", r.id);
    match crowd_mota(&gt, &hyp, 2)? {
        CrowdMota::EmptyStratum => println!("no identity was hidden long enough"),
        CrowdMota::Stratum { ids, report } => {
            println!("occluded identities {ids:?}: MOTA {:.3} ({report:?})", report.mota())
        }
    }
    Ok(())
}
