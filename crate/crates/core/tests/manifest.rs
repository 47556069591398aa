use figmine_core::corpus::{store_png, Manifest, ObjectStore};
use figmine_core::{synth, LumaImage};

#[test]
fn manifest_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth::catalog(30, 3, 9);
    m.validate().unwrap();
    m.save(dir.path()).unwrap();
    assert!(Manifest::exists(dir.path()));
    assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    // saving again is byte-stable
    let before = std::fs::read(dir.path().join("figures.jsonl")).unwrap();
    Manifest::load(dir.path()).unwrap().save(dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("figures.jsonl")).unwrap(), before);
}

#[test]
fn stored_images_are_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let store = Manifest::image_store(dir.path()).unwrap();
    let img = LumaImage::new(20, 10, 0.25);
    let png = image::DynamicImage::ImageLuma8(img.to_gray());
    let k1 = store_png(&store, &png).unwrap();
    let k2 = store_png(&store, &png).unwrap();
    assert_eq!(k1, k2);
    assert!(k1.ends_with(".png"));
    let back = image::load_from_memory(&store.get(&k1).unwrap()).unwrap();
    assert_eq!(LumaImage::from_dynamic(&back), LumaImage::from_dynamic(&png));
}
