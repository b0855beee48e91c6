fn main(){ for a in [0.0,0.5,1.0]{ let mut s=hippo::fastlegs::LegsStepper::new(8,a); for _ in 0..10000 { s.step(1.0).unwrap(); } println!("{a} {:?}", &s.coefs()[..4]); } }
