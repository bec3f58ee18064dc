#pragma once
#include "reserve/admm.hpp"

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace reserve {

enum class MessageKind : std::uint8_t { Accumulate = 0, Circulate = 1 };

const char* to_string(MessageKind k);

// One frame on the ring: either a running partial aggregate on its way around, or the
// finished aggregate on its way back.
struct RingMessage {
    MessageKind kind = MessageKind::Accumulate;
    std::uint32_t iter = 0;  // negotiation iteration the frame belongs to
    std::uint32_t hop = 0;   // 1-based ring position of the sender
    Eigen::VectorXd payload; // length-N profile
};

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wire format, little endian throughout:
//   u32 magic 0x41444D4D ("MMDA" on the wire, i.e. bytes 4D 4D 44 41)
//   u8  kind (0 accumulate, 1 circulate)
//   u32 iter
//   u32 hop
//   u32 count (number of payload entries, >= 1)
//   count x f64 payload (IEEE 754 binary64)
// Total 17 + 8 * count bytes.
std::vector<std::uint8_t> codec_encode(const RingMessage& msg);
RingMessage codec_decode(const std::uint8_t* data, std::size_t len);
RingMessage codec_decode(const std::vector<std::uint8_t>& frame);

// One member's attachment to the ring: neighbor indices plus the inbox of frames that have
// been delivered but not yet consumed.
struct TransportEndpoint {
    int self = 0;
    int prev = 0;
    int next = 0;
    std::deque<std::vector<std::uint8_t>> inbox;
};

// Deterministic in-memory ring. Frames move only between neighbors; every delivery is
// appended to a hex transcript so a negotiation can be replayed byte by byte.
class RingTransport {
  public:
    explicit RingTransport(int M);
    int size() const { return static_cast<int>(endpoints_.size()); }
    TransportEndpoint& endpoint(int b);
    // Severs the physical connection between member a and member (a + 1) % M.
    void sever_link(int a);
    void send(int from, int to, std::vector<std::uint8_t> frame);
    std::vector<std::uint8_t> receive(int at);
    std::size_t delivered() const { return delivered_; }
    const std::vector<std::string>& transcript() const { return transcript_; }

  private:
    int link_index(int from, int to) const;  // throws ProtocolError for non-neighbors
    std::vector<TransportEndpoint> endpoints_;
    std::vector<bool> link_up_;
    std::size_t delivered_ = 0;
    std::vector<std::string> transcript_;
};

// Accumulate member contributions around the ring, then circulate the total back.
// Every member ends up holding the identical aggregate; exactly 2(M-1) deliveries.
Eigen::VectorXd ring_round(RingTransport& ring, const Eigen::MatrixXd& contributions,
                           std::uint32_t iter);

// A member's work between two ring rounds: smooth its profile against the aggregate,
// mediate the multiplier, then re-solve the local problem at the new point (the refreshed
// policy stays cached in `state`).
struct LocalUpdateResult {
    Eigen::VectorXd ybar;
    Eigen::VectorXd lambda;
    Eigen::VectorXd y;  // next iteration's contribution basis
};
LocalUpdateResult local_update(BuildingLocalState& state, const Eigen::VectorXd& Omega,
                               const Eigen::VectorXd& lambda_b, const Eigen::VectorXd& y_b,
                               double rho, const Eigen::VectorXd& p, double qp_tol = 1e-9,
                               int qp_max_iter = 100);

// Full negotiation in ring form. Produces the same iterate history as run_centralized
// (the aggregation arithmetic is shared); pass a ring to inspect transcripts or inject
// failures, otherwise a fresh in-memory ring is used.
AdmmRun run_decentralized(const std::vector<BuildingModel>& fleet, const AdmmConfig& config,
                          const Eigen::VectorXd& p, RingTransport* ring = nullptr,
                          const IterationCallback& callback = {});

} // namespace reserve
