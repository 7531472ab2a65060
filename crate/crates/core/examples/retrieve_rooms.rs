//! Fingerprint retrieval: find corpus rooms that sound like a few enrollment
//! recordings from an unseen room.

use std::error::Error;

use rirfield::manifest::RoomEntry;
use rirfield::retrieval::{
    rank_rooms, retrieve_geometry, select_pretraining_rooms, select_random_rooms, RetrievalIndex,
    RirRecord,
};
use rirfield::rir::{multiband_rt60, Rt60Fingerprint};
use rirfield::simulator::{generate_room, CorpusRecipe};

fn main() -> Result<(), Box<dyn Error>> {
    let recipe = CorpusRecipe {
        rooms: 12,
        pairs_per_room: 6,
        length_s: 0.4,
        ..CorpusRecipe::default()
    };
    let bands = recipe.bands.clone();

    let mut records = Vec::new();
    let mut rooms: Vec<RoomEntry> = Vec::new();
    let mut enrollment: Vec<Rt60Fingerprint> = Vec::new();
    for i in 0..recipe.rooms {
        let room = generate_room(&recipe, 5, i)?;
        for (entry, ir) in &room.rirs {
            let fingerprint = multiband_rt60(ir, &bands)?;
            if i == 0 {
                // room000 plays the unseen target
                enrollment.push(fingerprint);
                continue;
            }
            records.push(RirRecord {
                rir_id: entry.rir_id.clone(),
                room_id: entry.room_id.clone(),
                src: entry.src,
                rcv: entry.rcv,
                fingerprint,
            });
        }
        rooms.push(room.room);
    }
    enrollment.truncate(3);

    let index = RetrievalIndex::new(records, bands)?;
    let ranking = rank_rooms(&index, &enrollment, 5)?;
    println!("rank room     count  best distance");
    for (i, r) in ranking.entries().iter().enumerate() {
        println!(
            "{:>4} {:<8} {:>5}  {:.4}",
            i + 1,
            r.room_id,
            r.count,
            r.best_distance
        );
    }

    let retrieved = select_pretraining_rooms(&ranking, 3);
    let random = select_random_rooms(&index, retrieved.len(), 9)?;
    println!("retrieved {retrieved:?}\nrandom    {random:?}");

    let target = &rooms[0];
    let geometry = retrieve_geometry(&ranking, &rooms)?;
    println!(
        "target dims {:?}, borrowed geometry from {} with extent {:?}",
        target.dims.unwrap(),
        geometry.room_id,
        geometry.bbox.extent()
    );
    Ok(())
}
