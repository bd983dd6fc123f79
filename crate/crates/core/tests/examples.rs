// The quick examples double as smoke tests.

mod metrics {
    include!("../examples/metrics.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod solvers {
    include!("../examples/solvers.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}

mod grouping {
    include!("../examples/grouping.rs");

    #[test]
    fn runs() {
        main().unwrap();
    }
}
