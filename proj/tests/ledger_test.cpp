#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "support.hpp"
#include "vcare/ledger.hpp"

using namespace vcare;
using vcare::testing::Population;

namespace {

Transaction upload_draft(const Population& p, std::uint64_t seq, Round now) {
  DataUploadPayload up;
  up.block_hash = hash_bytes("data-" + std::to_string(seq));
  up.timestamp = now;
  up.vehicle = Population::address(p.vehicle.keypair);
  up.csp = Population::address(p.csp.keypair);
  up.seq = seq;
  auto tx = make_transaction(up, up.vehicle, {up.vehicle, up.csp}, now);
  add_signature(tx, p.vehicle.keypair);
  return tx;
}

Transaction upload_complete(const Population& p, std::uint64_t seq, Round now) {
  auto tx = upload_draft(p, seq, now);
  add_signature(tx, p.csp.keypair);
  return tx;
}

Digest leaf(std::string_view s) { return hash_bytes(s); }

std::string concat_hex_hash(const Digest& a, const Digest& b) {
  Bytes buf(a.view().begin(), a.view().end());
  buf.insert(buf.end(), b.view().begin(), b.view().end());
  return vcare::testing::oracle_sha256(buf.data(), buf.size());
}

}  // namespace

TEST(VerifyTransaction, MultiSignatureRequired) {
  Population p;
  EXPECT_EQ(verify_transaction(upload_draft(p, 0, 1), p.registry()), TxError::IncompleteMultiSig);
  EXPECT_EQ(verify_transaction(upload_complete(p, 0, 1), p.registry()), std::nullopt);
}

TEST(VerifyTransaction, SingleSignedAccessRequest) {
  Population p;
  auto tx = request_access(p.insurer.keypair, p.registry(), Population::address(p.vehicle.keypair),
                           Population::address(p.csp.keypair), "select vehicle_speed from 0 to 10", 3);
  EXPECT_EQ(tx.signatures.size(), 1u);
  EXPECT_EQ(verify_transaction(tx, p.registry()), std::nullopt);
}

TEST(VerifyTransaction, UnregisteredInitiator) {
  Population p;
  auto stranger = vcare::testing::key_from_label("stranger");
  AccessRequestPayload req{Population::address(p.vehicle.keypair), Population::address(p.csp.keypair),
                           "select vehicle_speed from 0 to 10"};
  const Address s = derive_address(stranger.public_key);
  auto tx = make_transaction(req, s, {s}, 3);
  add_signature(tx, stranger);
  EXPECT_EQ(verify_transaction(tx, p.registry()), TxError::UnregisteredSigner);
}

TEST(VerifyTransaction, TamperedFields) {
  Population p;
  auto tx = upload_complete(p, 0, 1);
  auto bad_id = tx;
  bad_id.timestamp = 2;
  EXPECT_EQ(verify_transaction(bad_id, p.registry()), TxError::BadTxId);
  auto bad_sig = tx;
  bad_sig.signatures[1].value[0] ^= 1;
  EXPECT_EQ(verify_transaction(bad_sig, p.registry()), TxError::BadSignature);
  auto swapped = tx;
  swapped.required_signers = {swapped.required_signers[1], swapped.required_signers[0]};
  swapped.tx_id = compute_tx_id(swapped);
  EXPECT_EQ(verify_transaction(swapped, p.registry()), TxError::ArityViolation);
}

TEST(VerifyTransaction, ExpiredLicense) {
  Population p(/*license_expiry=*/10);
  EXPECT_EQ(verify_transaction(upload_complete(p, 0, 10), p.registry()), std::nullopt);
  EXPECT_EQ(verify_transaction(upload_complete(p, 0, 11), p.registry()), TxError::ExpiredLicense);
}

TEST(Merkle, Definitions) {
  const Digest t1 = leaf("t1"), t2 = leaf("t2"), t3 = leaf("t3");
  EXPECT_EQ(merkle_root(std::vector<Digest>{t1}), t1);
  EXPECT_EQ(merkle_root(std::vector<Digest>{t1, t2}).hex(), concat_hex_hash(t1, t2));
  EXPECT_EQ(merkle_root(std::vector<Digest>{t1, t2, t3}), merkle_root(std::vector<Digest>{t1, t2, t3, t3}));
  EXPECT_THROW(merkle_root(std::vector<Digest>{}), LedgerError);
}

TEST(Merkle, FourLeavesByHand) {
  const Digest a = leaf("a"), b = leaf("b"), c = leaf("c"), d = leaf("d");
  const Digest ab = Digest::from_hex(concat_hex_hash(a, b));
  const Digest cd = Digest::from_hex(concat_hex_hash(c, d));
  EXPECT_EQ(merkle_root(std::vector<Digest>{a, b, c, d}).hex(), concat_hex_hash(ab, cd));
}

TEST(Mining, DifficultyZeroTakesFirstNonce) {
  Population p;
  auto b = mine_block({upload_complete(p, 0, 1)}, p.chain.back().header, 0, Population::address(p.ta), 77, 1);
  EXPECT_EQ(b.header.nonce, 77u);
}

TEST(Mining, MinedBlockValidates) {
  Population p;
  for (unsigned d : {0u, 4u, 8u}) {
    auto b = mine_block({upload_complete(p, d, 1)}, p.chain.back().header, d, Population::address(p.ta), 0, 1);
    EXPECT_GE(leading_zero_bits(b.hash()), d);
    auto errs = validate_block(b, p.chain.back().header, p.registry());
    if (d == Population::kDifficulty) {
      EXPECT_TRUE(errs.empty());
    } else {
      // Difficulty is fixed per chain; a block may not change it.
      ASSERT_EQ(errs.size(), 1u);
      EXPECT_EQ(errs[0].code, BlockErrc::BadDifficulty);
    }
  }
}

TEST(Mining, Preconditions) {
  Population p;
  EXPECT_THROW(mine_block({}, p.chain.back().header, 4, Population::address(p.ta), 0, 1), LedgerError);
  EXPECT_THROW(mine_block({upload_complete(p, 0, 1)}, p.chain.back().header, 65, Population::address(p.ta), 0, 1),
               LedgerError);
}

TEST(Mining, JobMatchesOneShot) {
  Population p;
  BlockHeader h;
  h.index = 1;
  h.prev_hash = p.chain.back().hash();
  h.timestamp = 1;
  h.difficulty = 8;
  h.miner = Population::address(p.ta);
  MiningJob job(h, {upload_complete(p, 0, 1)}, 5);
  std::optional<Block> found;
  while (!found) found = job.attempt(17);
  auto direct = mine_block({upload_complete(p, 0, 1)}, p.chain.back().header, 8, h.miner, 5, 1);
  EXPECT_EQ(*found, direct);
  EXPECT_EQ(job.attempts(), direct.header.nonce - 5 + 1);
}

// Attempts until success follow a geometric law with p = 2^-d. Mean and a
// chi-square goodness of fit over quantile bins of the exact distribution.
TEST(Mining, GeometricAttempts) {
  Population p;
  auto tx = upload_complete(p, 0, 1);
  for (unsigned d : {8u, 10u}) {
    const double prob = std::ldexp(1.0, -static_cast<int>(d));
    std::mt19937_64 gen(d);
    std::vector<double> samples;
    for (int run = 0; run < 400; ++run) {
      const std::uint64_t start = gen() >> 8;
      auto b = mine_block({tx}, p.chain.back().header, d, Population::address(p.ta), start, static_cast<Round>(run));
      samples.push_back(static_cast<double>(b.header.nonce - start + 1));
    }
    double mean = 0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    EXPECT_NEAR(mean, 1.0 / prob, 0.2 / prob) << "difficulty " << d;

    // Five equiprobable bins from the geometric CDF: P(X <= k) = 1 - (1-p)^k.
    std::vector<double> edges;
    for (int q = 1; q < 5; ++q) edges.push_back(std::log(1.0 - q / 5.0) / std::log(1.0 - prob));
    std::vector<double> counts(5, 0.0);
    for (double s : samples) {
      std::size_t bin = 0;
      while (bin < edges.size() && s > edges[bin]) ++bin;
      counts[bin] += 1;
    }
    double chi2 = 0;
    const double expected = static_cast<double>(samples.size()) / 5.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 18.47) << "difficulty " << d;  // 4 dof, p = 0.001
  }
}

TEST(ValidateBlock, TamperEvidence) {
  Population p;
  auto b = mine_block({upload_complete(p, 0, 1), upload_complete(p, 1, 1)}, p.chain.back().header, 8,
                      Population::address(p.ta), 0, 1);
  auto has = [](const std::vector<BlockError>& errs, BlockErrc c) {
    return std::any_of(errs.begin(), errs.end(), [&](const auto& e) { return e.code == c; });
  };
  auto payload_flip = b;
  std::get<DataUploadPayload>(payload_flip.transactions[1].payload).seq ^= 1;
  auto errs = validate_block(payload_flip, p.chain.back().header, p.registry());
  EXPECT_TRUE(has(errs, BlockErrc::BadMerkle));
  EXPECT_TRUE(has(errs, BlockErrc::InvalidTx));

  auto weak = b;
  while (leading_zero_bits(weak.hash()) >= 8) ++weak.header.nonce;
  EXPECT_TRUE(has(validate_block(weak, p.chain.back().header, p.registry()), BlockErrc::BadPow));

  auto relinked = b;
  relinked.header.prev_hash = Digest();
  EXPECT_TRUE(has(validate_block(relinked, p.chain.back().header, p.registry()), BlockErrc::BadPrevHash));

  auto dup = mine_block({upload_complete(p, 0, 1), upload_complete(p, 0, 1)}, p.chain.back().header, 4,
                        Population::address(p.ta), 0, 1);
  EXPECT_TRUE(has(validate_block(dup, p.chain.back().header, p.registry()), BlockErrc::DuplicateTx));
}

TEST(ValidateChain, Basics) {
  EXPECT_EQ(validate_chain({}).front().code, BlockErrc::NoGenesis);
  Population p;
  for (std::uint64_t i = 0; i < 4; ++i) p.seal({upload_complete(p, i, i + 1)}, i + 1);
  ASSERT_EQ(p.chain.size(), 5u);
  EXPECT_TRUE(validate_chain(p.chain).empty());

  auto bad_genesis = p.chain;
  bad_genesis[0].header.prev_hash = hash_bytes("x");
  bad_genesis[0] = mine_block(bad_genesis[0].transactions, BlockHeader{}, Population::kDifficulty,
                              bad_genesis[0].header.miner, 0, 0);
  bad_genesis[0].header.index = 0;
  auto errs = validate_chain(bad_genesis);
  ASSERT_FALSE(errs.empty());
  EXPECT_EQ(errs.front().block_index, 0u);

  auto replay = p.chain;
  replay.push_back(mine_block({upload_complete(p, 0, 1)}, replay.back().header, Population::kDifficulty,
                              Population::address(p.ta), 0, 9));
  errs = validate_chain(replay);
  ASSERT_FALSE(errs.empty());
  EXPECT_EQ(errs.front().block_index, 5u);
  EXPECT_EQ(errs.front().code, BlockErrc::DuplicateTx);
}

TEST(ForkChoice, Examples) {
  Population p;
  Chain short_chain = p.chain, long_chain = p.chain;
  for (std::uint64_t i = 0; i < 2; ++i) {
    short_chain.push_back(mine_block({upload_complete(p, i, 1)}, short_chain.back().header, 4,
                                     Population::address(p.ta), 0, 1));
  }
  for (std::uint64_t i = 0; i < 4; ++i) {
    long_chain.push_back(mine_block({upload_complete(p, 10 + i, 1)}, long_chain.back().header, 4,
                                    Population::address(p.ta), 0, 1));
  }
  std::vector<Chain> two{short_chain, long_chain};
  EXPECT_EQ(fork_choice(two), long_chain);
  std::vector<Chain> one{short_chain};
  EXPECT_EQ(fork_choice(one), short_chain);
  EXPECT_THROW(fork_choice(std::vector<Chain>{}), LedgerError);

  Chain a = p.chain, b = p.chain;
  a.push_back(mine_block({upload_complete(p, 20, 1)}, a.back().header, 4, Population::address(p.ta), 0, 1));
  b.push_back(mine_block({upload_complete(p, 21, 1)}, b.back().header, 4, Population::address(p.ta), 0, 1));
  ASSERT_EQ(chain_work(a), chain_work(b));
  const Chain& smaller = a.back().hash() < b.back().hash() ? a : b;
  EXPECT_EQ(fork_choice(std::vector<Chain>{a, b}), smaller);
  EXPECT_EQ(fork_choice(std::vector<Chain>{b, a}), smaller);

  auto broken = long_chain;
  broken[2].header.timestamp += 1;
  EXPECT_THROW(fork_choice(std::vector<Chain>{broken, short_chain}), LedgerError);
}

TEST(ForkChoice, PermutationInvariantAndIdempotent) {
  Population p;
  std::mt19937_64 gen(5);
  std::vector<Chain> forks;
  for (int f = 0; f < 6; ++f) {
    Chain c = p.chain;
    const int len = 1 + static_cast<int>(gen() % 3);
    for (int i = 0; i < len; ++i) {
      const unsigned d = 2 + static_cast<unsigned>(gen() % 3);
      c.push_back(mine_block({upload_complete(p, static_cast<std::uint64_t>(f * 10 + i), 1)}, c.back().header, d,
                             Population::address(p.ta), 0, 1));
    }
    forks.push_back(std::move(c));
  }
  const Chain winner = forks[best_chain_index(forks)];
  for (int trial = 0; trial < 30; ++trial) {
    std::shuffle(forks.begin(), forks.end(), gen);
    EXPECT_EQ(forks[best_chain_index(forks)], winner);
  }
  for (const auto& c : forks) EXPECT_LE(chain_work(c), chain_work(winner));
  std::vector<Chain> again{winner, winner};
  EXPECT_EQ(fork_choice(again), winner);
}

TEST(ChainFile, RoundTripAndLineErrors) {
  Population p;
  p.seal({upload_complete(p, 0, 1)}, 1);
  std::ostringstream out;
  write_chain(out, p.chain);
  const std::string text = out.str();
  std::istringstream in(text);
  EXPECT_EQ(read_chain(in), p.chain);
  std::ostringstream again;
  write_chain(again, read_chain(*std::make_unique<std::istringstream>(text)));
  EXPECT_EQ(again.str(), text);

  std::string broken = text;
  broken[text.find('\n') + 3] = '#';
  std::istringstream bad(broken);
  try {
    read_chain(bad);
    FAIL() << "corrupt line accepted";
  } catch (const ChainFileError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  std::istringstream empty("");
  EXPECT_TRUE(read_chain(empty).empty());
}
